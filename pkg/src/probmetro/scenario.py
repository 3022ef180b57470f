"""Scenario files and built-in scenarios.

A scenario is a JSON document (``schema: 1``). Matrices are nested arrays
of ``[re, im]`` pairs, row-major. Example::

    {
      "schema": 1,
      "name": "qubit_phase_pure",
      "x": 0.3,
      "family": {"kind": "analytic_unitary", "generator": M, "base": M,
                 "noise": [M, ...]},            # noise optional
      "selection": {"outcomes": [[M, ...], ...], "favorable": [0]},
      "povm": [M, ...],                         # optional
      "conditional_povm": [M, ...],             # optional
      "x_true": 1.5707963267948966,             # optional
      "interval": [0.0, 3.141592653589793]      # optional
    }

Outcome indices in ``favorable`` are 0-based.
"""

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import check_random_state
from .exceptions import ProbMetroError, ScenarioError
from .objects import (
    IDENTITY2,
    POVM,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    AnalyticUnitary,
    KrausChannel,
    SelectionMeasurement,
    bloch_state,
    ket,
    projector,
    random_density,
    random_hermitian,
    random_selection,
)

SCHEMA_VERSION = 1

_MATRIX = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "array",
        "minItems": 1,
        "items": {
            "type": "array",
            "minItems": 2,
            "maxItems": 2,
            "items": {"type": "number"},
        },
    },
}

SCHEMA = {
    "type": "object",
    "required": ["schema", "name", "family", "selection"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "x": {"type": "number"},
        "x_true": {"type": "number"},
        "interval": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "family": {
            "type": "object",
            "required": ["kind", "generator", "base"],
            "properties": {
                "kind": {"const": "analytic_unitary"},
                "generator": _MATRIX,
                "base": _MATRIX,
                "noise": {"type": "array", "items": _MATRIX, "minItems": 1},
            },
        },
        "selection": {
            "type": "object",
            "required": ["outcomes", "favorable"],
            "properties": {
                "outcomes": {"type": "array", "minItems": 1,
                             "items": {"type": "array", "minItems": 1, "items": _MATRIX}},
                "favorable": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
            },
        },
        "povm": {"type": "array", "items": _MATRIX, "minItems": 1},
        "conditional_povm": {"type": "array", "items": _MATRIX, "minItems": 1},
    },
}


@dataclass
class Scenario:
    name: str
    family: AnalyticUnitary
    selection: SelectionMeasurement
    x: float = 0.0
    povm: POVM = None
    conditional_povm: POVM = None
    x_true: float = None
    interval: tuple = (0.0, math.pi)
    document: dict = None  # the parsed file, when loaded from one

    def to_dict(self):
        fam = self.family
        d = {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "x": float(self.x),
            "family": {
                "kind": "analytic_unitary",
                "generator": encode_matrix(fam.generator),
                "base": encode_matrix(fam.base),
            },
            "selection": {
                "outcomes": [[encode_matrix(M) for M in ops] for ops in self.selection.outcomes],
                "favorable": list(self.selection.favorable),
            },
            "interval": [float(v) for v in self.interval],
        }
        if fam.noise is not None:
            d["family"]["noise"] = [encode_matrix(K) for K in fam.noise.kraus_ops]
        if self.povm is not None:
            d["povm"] = [encode_matrix(E) for E in self.povm.elements]
        if self.conditional_povm is not None:
            d["conditional_povm"] = [encode_matrix(E) for E in self.conditional_povm.elements]
        if self.x_true is not None:
            d["x_true"] = float(self.x_true)
        return d

    def digest(self):
        """Content hash of the source document, or of the serialized form for built-ins."""
        return scenario_digest(self.document if self.document is not None else self.to_dict())


def encode_matrix(A):
    A = np.asarray(A, dtype=complex)
    # + 0.0 folds -0.0 into 0.0 so equal matrices hash equally
    return [[[float(z.real) + 0.0, float(z.imag) + 0.0] for z in row] for row in A]


def decode_matrix(data, where="matrix"):
    rows = {len(r) for r in data}
    if len(rows) != 1:
        raise ScenarioError("rows have different lengths", where)
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def scenario_digest(data):
    """SHA-256 of the canonicalized scenario document."""
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def _path(error):
    parts = "/".join(str(p) for p in error.absolute_path)
    return parts or "<root>"


def scenario_from_dict(data):
    """Validate a scenario document and build the objects it describes."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioError(e.message, f"field {_path(e)}")
    fam = data["family"]
    try:
        noise = None
        if "noise" in fam:
            noise = KrausChannel([decode_matrix(K, f"family/noise/{i}") for i, K in enumerate(fam["noise"])])
        family = AnalyticUnitary(
            decode_matrix(fam["generator"], "family/generator"),
            decode_matrix(fam["base"], "family/base"),
            noise,
        )
    except ScenarioError:
        raise
    except ProbMetroError as exc:
        raise ScenarioError(str(exc), "field family") from exc
    sel = data["selection"]
    try:
        selection = SelectionMeasurement(
            [[decode_matrix(M, f"selection/outcomes/{a}/{j}") for j, M in enumerate(ops)]
             for a, ops in enumerate(sel["outcomes"])],
            tuple(sel["favorable"]),
        )
    except ScenarioError:
        raise
    except ProbMetroError as exc:
        raise ScenarioError(str(exc), "field selection") from exc
    if selection.dim != family.dim:
        raise ScenarioError("selection dimension differs from the family", "field selection")

    def povm(key):
        if key not in data:
            return None
        try:
            return POVM([decode_matrix(E, f"{key}/{i}") for i, E in enumerate(data[key])])
        except ScenarioError:
            raise
        except ProbMetroError as exc:
            raise ScenarioError(str(exc), f"field {key}") from exc

    return Scenario(
        name=data["name"],
        family=family,
        selection=selection,
        x=float(data.get("x", 0.0)),
        povm=povm("povm"),
        conditional_povm=povm("conditional_povm"),
        x_true=data.get("x_true"),
        interval=tuple(data.get("interval", (0.0, math.pi))),
        document=data,
    )


def load_scenario(path):
    """Read a scenario file; JSON syntax errors report their line and column."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from exc
    return scenario_from_dict(data)


def save_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=1, sort_keys=True) + "\n")


# -- built-ins ----------------------------------------------------------------

_PLUS = projector(ket(1, 1))
_FILTER = 0.3


def _z_filter():
    """Two-outcome partial Z measurement: Kraus ``diag(cos t, sin t)`` and ``diag(sin t, cos t)``."""
    c, s = math.cos(_FILTER), math.sin(_FILTER)
    return SelectionMeasurement([[np.diag([c, s])], [np.diag([s, c])]], (0,))
_X_BASIS = POVM([projector(ket(1, 1)), projector(ket(1, -1))])
_Z_PROJ = [projector(ket(1, 0)), projector(ket(0, 1))]


def qubit_phase_pure():
    """Phase shift ``exp(-i x Z/2)`` on ``|+>``, measured in the X basis; QFI = 1.

    The selection is a partial Z measurement that keeps some phase information.
    """
    return Scenario(
        name="qubit_phase_pure",
        family=AnalyticUnitary(SIGMA_Z / 2, _PLUS),
        selection=_z_filter(),
        x=0.3,
        povm=_X_BASIS,
        conditional_povm=_X_BASIS,
        x_true=math.pi / 2,
        interval=(0.0, math.pi),
    )


def qubit_phase_mixed(r=0.5):
    """Phase shift on the mixed state with Bloch vector ``(r, 0, 0)``; QFI = r^2."""
    return Scenario(
        name="qubit_phase_mixed",
        family=AnalyticUnitary(SIGMA_Z / 2, bloch_state((r, 0, 0))),
        selection=_z_filter(),
        x=0.3,
        povm=_X_BASIS,
        conditional_povm=_X_BASIS,
        x_true=math.pi / 2,
        interval=(0.0, math.pi),
    )


def binomial_phase():
    """Pure phase family with ``p(0|x) = cos^2(x/2)``; identical to ``qubit_phase_pure``."""
    s = qubit_phase_pure()
    s.name = "binomial_phase"
    return s


def wasteful_qubit():
    """Post-selection on a fair coin that ignores the system: ``p(ok) = 1/2``, ``I_sigma = I_rho``."""
    coin = np.sqrt(0.5) * IDENTITY2
    s = qubit_phase_pure()
    s.name = "wasteful_qubit"
    s.selection = SelectionMeasurement([[coin], [coin]], (0,))
    return s


def weak_value_2qubit(epsilon=0.3):
    """Two qubits in a pure product state coupled by ``exp(-i x Z (x) Y / 2)``.

    The first qubit starts in ``|+>`` and is post-selected onto a state
    nearly orthogonal to it (overlap ``sin(epsilon)``); the second (meter)
    qubit starts in ``|0>`` and is read out in the X basis.

    The conditional meter statistics are monotone only for ``|x| < 2 epsilon``,
    which is the declared estimation interval.
    """
    theta = math.pi / 4 + epsilon
    post = ket(math.cos(theta), -math.sin(theta))
    post_perp = ket(math.sin(theta), math.cos(theta))
    sel = SelectionMeasurement.projective(
        [np.kron(projector(post), IDENTITY2), np.kron(projector(post_perp), IDENTITY2)],
        favorable=(0,),
    )
    meter_x = [projector(ket(1, 1)), projector(ket(1, -1))]
    # deterministic readout: system in Z, meter in X (attains the QFI)
    det = POVM([np.kron(P, Q) for P in _Z_PROJ for Q in meter_x])
    cond = POVM([np.kron(IDENTITY2, Q) for Q in meter_x])
    base = np.kron(_PLUS, projector(ket(1, 0)))
    return Scenario(
        name="weak_value_2qubit",
        family=AnalyticUnitary(np.kron(SIGMA_Z, SIGMA_Y) / 2, base),
        selection=sel,
        x=0.3,
        povm=det,
        conditional_povm=cond,
        x_true=0.1,
        interval=(-2 * epsilon, 2 * epsilon),
    )


def random_channel(rng_seed=0, max_dim=4, max_outcomes=3, max_kraus=2):
    """Random instance: Haar instrument on a random-generator unitary family."""
    return random_instance(rng_seed, max_dim, max_outcomes, max_kraus)


def random_instance(rng_seed, max_dim=4, max_outcomes=3, max_kraus=2):
    rng = check_random_state(rng_seed)
    dim = int(rng.integers(2, max_dim + 1))
    n_out = int(rng.integers(2, max_outcomes + 1)) if max_outcomes >= 2 else 1
    kraus = [int(k) for k in rng.integers(1, max_kraus + 1, size=n_out)]
    favorable = [a for a in range(n_out) if rng.random() < 0.5] or [int(rng.integers(n_out))]
    rank = int(rng.integers(1, dim + 1))
    family = AnalyticUnitary(random_hermitian(dim, rng), random_density(dim, rank, rng))
    selection = random_selection(dim, n_out, kraus, rng, favorable=favorable)
    x = float(rng.uniform(0, 2 * math.pi))
    return Scenario(name="random_channel", family=family, selection=selection, x=x)


BUILTINS = {
    "qubit_phase_pure": qubit_phase_pure,
    "qubit_phase_mixed": qubit_phase_mixed,
    "binomial_phase": binomial_phase,
    "wasteful_qubit": wasteful_qubit,
    "weak_value_2qubit": weak_value_2qubit,
    "random_channel": random_channel,
}


def get_scenario(name_or_path):
    """A built-in scenario by name, or a scenario file by path."""
    if name_or_path in BUILTINS:
        return BUILTINS[name_or_path]()
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path)
    raise ScenarioError(f"no built-in scenario or file named {name_or_path!r}", "scenario")
