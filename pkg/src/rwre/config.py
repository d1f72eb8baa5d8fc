"""Experiment configuration: one JSON document per run."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

from .environment import EnvironmentLaw
from .errors import ConfigInvalid, ConstraintViolation, InvalidLaw, NonUnitDirection
from .geometry import Direction
from .walks import EXACT

KINDS = ("exit-exact", "exit-mc", "pm-check", "decay-fit", "renorm-verify", "renorm-ladder", "independence")

GEOMETRY_REQUIRED = {
    "exit-exact": ("direction", "L"),
    "exit-mc": ("direction", "L"),
    "pm-check": ("direction", "M", "L"),
    "decay-fit": ("direction", "scales"),
    "renorm-verify": ("direction", "L0", "Lt1", "N"),
    "renorm-ladder": ("L0", "Lt0", "nu", "k_max"),
    "independence": ("direction", "L0", "Lt1"),
}

SAMPLING_DEFAULTS = {"n_env": 1, "n_walk": EXACT, "confidence": 0.95, "method": "wilson"}


@dataclass
class ExperimentConfig:
    kind: str
    law: dict
    geometry: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, data, kind=None):
        if not isinstance(data, dict):
            raise ConfigInvalid("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigInvalid(sorted(extra)[0], "unknown field")
        data = dict(data)
        if kind is not None:
            if "kind" in data and data["kind"] != kind:
                raise ConfigInvalid("kind", f"config kind {data['kind']!r} does not match command {kind!r}")
            data["kind"] = kind
        if "kind" not in data:
            raise ConfigInvalid("kind", "missing")
        if "law" not in data:
            raise ConfigInvalid("law", "missing")
        for name in ("law", "geometry", "constants", "sampling"):
            if name in data and not isinstance(data[name], dict):
                raise ConfigInvalid(name, "must be a JSON object")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text, kind=None):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("<root>", f"not valid JSON: {exc.msg}") from None
        return cls.from_dict(data, kind)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def canonical(self):
        """Serialization that excludes the output location."""
        d = self.to_dict()
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    # -- typed accessors --------------------------------------------------

    def law_obj(self):
        spec = {k: v for k, v in self.law.items() if k != "seed"}
        return EnvironmentLaw.from_dict(spec)

    def direction(self):
        return Direction(tuple(float(v) for v in self.geometry["direction"]))

    def sample(self, key):
        return self.sampling.get(key, SAMPLING_DEFAULTS[key])

    def constants_obj(self):
        from .renorm import ConstantsConfig

        law = self.law_obj()
        c = dict(self.constants)
        c.setdefault("d", law.d)
        c.setdefault("kappa", law.kappa)
        return ConstantsConfig(**c)

    # -- validation -------------------------------------------------------

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigInvalid("kind", f"unknown experiment kind {self.kind!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ConfigInvalid("seed", "must be an unsigned 64-bit integer")
        try:
            law = self.law_obj()
        except InvalidLaw as exc:
            raise ConfigInvalid("law", exc.message, **exc.context) from None
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid("law", str(exc)) from None
        g = self.geometry
        for key in GEOMETRY_REQUIRED[self.kind]:
            if key not in g:
                raise ConfigInvalid(f"geometry.{key}", "missing")
        if "direction" in g:
            try:
                dv = self.direction()
            except NonUnitDirection as exc:
                raise ConfigInvalid("geometry.direction", exc.message) from None
            except (TypeError, ValueError):
                raise ConfigInvalid("geometry.direction", "must be a list of numbers") from None
            if dv.d != law.d:
                raise ConfigInvalid("geometry.direction", f"dimension {dv.d} differs from law dimension {law.d}")
        self._validate_sampling()
        try:
            cons = self.constants_obj()
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid("constants", str(exc)) from None
        getattr(self, "_check_" + self.kind.replace("-", "_"))(law, cons)

    def _validate_sampling(self):
        s = self.sampling
        extra = set(s) - set(SAMPLING_DEFAULTS)
        if extra:
            raise ConfigInvalid(f"sampling.{sorted(extra)[0]}", "unknown field")
        n_env = self.sample("n_env")
        if not (isinstance(n_env, int) and n_env >= 1):
            raise ConfigInvalid("sampling.n_env", "must be an integer >= 1")
        n_walk = self.sample("n_walk")
        if n_walk != EXACT and not (isinstance(n_walk, int) and n_walk >= 1):
            raise ConfigInvalid("sampling.n_walk", f"must be an integer >= 1 or {EXACT!r}")
        if not 0.0 < float(self.sample("confidence")) < 1.0:
            raise ConfigInvalid("sampling.confidence", "must lie in (0, 1)")
        if self.sample("method") not in ("wilson", "clopper-pearson"):
            raise ConfigInvalid("sampling.method", "must be 'wilson' or 'clopper-pearson'")

    def _positive(self, key):
        v = self.geometry[key]
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigInvalid(f"geometry.{key}", "must be positive")
        return v

    def _check_exit_exact(self, law, cons):
        self._positive("L")
        if "Lt" in self.geometry:
            self._positive("Lt")

    def _check_exit_mc(self, law, cons):
        self._check_exit_exact(law, cons)
        if self.sample("n_walk") == EXACT:
            raise ConfigInvalid("sampling.n_walk", "exit-mc needs an integer number of walks")

    def _check_pm_check(self, law, cons):
        self._positive("M")
        self._positive("L")
        h = self.geometry.get("half_angle", 0.0)
        if not 0.0 <= h <= math.pi / 4:
            raise ConfigInvalid("geometry.half_angle", "must lie in [0, pi/4]")

    def _check_decay_fit(self, law, cons):
        sc = self.geometry["scales"]
        if not isinstance(sc, list) or len(sc) < 3:
            raise ConfigInvalid("geometry.scales", "needs at least 3 scales")
        if any(not (isinstance(v, (int, float)) and v > 0) for v in sc) or sorted(set(sc)) != sc:
            raise ConfigInvalid("geometry.scales", "must be positive and strictly increasing")

    def _check_renorm_verify(self, law, cons):
        L0 = self._positive("L0")
        self._positive("Lt1")
        N = self.geometry["N"]
        if not (isinstance(N, int) and N >= 2):
            raise ConfigInvalid("geometry.N", "must be an integer >= 2")
        if not self.geometry["Lt1"] >= L0:
            raise ConfigInvalid("geometry.Lt1", "must be at least L0")

    def _check_renorm_ladder(self, law, cons):
        from .renorm import SEED_48, build_ladder

        g = self.geometry
        if not (isinstance(g["k_max"], int) and g["k_max"] >= 0):
            raise ConfigInvalid("geometry.k_max", "must be an integer >= 0")
        try:
            ladder = build_ladder(g["L0"], g["Lt0"], g["nu"], g["k_max"], law.d, g.get("require_seed", False))
        except ConstraintViolation as exc:
            raise ConfigInvalid(_ladder_field(exc.display), exc.message, display=exc.display) from None
        if "E_q0" in g and not ladder.constraints[SEED_48]:
            raise ConfigInvalid("geometry.nu", f"{SEED_48} fails for N = {ladder.N}, Nt = {ladder.Nt}",
                                display=SEED_48)
        if "E_q0" in g and not 0.0 <= g["E_q0"] <= 1.0:
            raise ConfigInvalid("geometry.E_q0", "must lie in [0, 1]")
        if not cons.lemma_range:
            raise ConfigInvalid("constants.beta", "the d_k recursion needs beta in (3/4, 1)")

    def _check_independence(self, law, cons):
        self._check_renorm_verify_geometry()
        if self.sample("n_env") < 30:
            raise ConfigInvalid("sampling.n_env", "independence diagnostic needs n_env >= 30")

    def _check_renorm_verify_geometry(self):
        L0 = self._positive("L0")
        if not self._positive("Lt1") >= L0:
            raise ConfigInvalid("geometry.Lt1", "must be at least L0")


def _ladder_field(display):
    if display.startswith("(scalesk0)"):
        return "geometry.L0"
    if display.startswith("(scalesk)"):
        return "geometry.Lt0"
    return "geometry.nu"


def load_config(path, kind=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid("--config", f"cannot read {path}: {exc.strerror}") from None
    return ExperimentConfig.from_json(text, kind)
