"""Instance files (YAML) and result files (JSON).

An instance file looks like::

    kind: pure_source
    systems: [{name: A, dim: 2}, {name: R, dim: 2}]
    state: [[0.7071067811865476, 0], [0, 0], [0, 0], [0.7071067811865476, 0]]
    distortion: {type: schumacher}
    caps: {z: 2}
    optimizer: {restarts: 32, seed: 0, feastol: 1.0e-6, d_grid: [0.0, 0.1, 0.3]}

Complex numbers are ``[re, im]`` pairs in row-major order.  Ensemble sources
replace ``state`` by ``ensemble: [{prob: 0.5, amplitudes: [...]}, ...]``.
Observable distortions carry ``matrix`` (rows of ``[re, im]`` pairs) acting on
the decoded layout: ``At`` (dim ``caps.a_out``, omitted when 1), ``Bt`` (dim
``caps.b_out``), then the reference registers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .distortion import EnsembleSource
from .k_solver import KInstance
from .rd_solver import RDInstance, ensemble_instance, observable_instance, qsr_instance, schumacher_instance
from .tensor_core import Operator, QuantumState, SystemLayout

__version__ = "0.1.0"

KINDS = ("pure_source", "ensemble_source")
DISTORTIONS = ("schumacher", "ensemble_schumacher", "qsr", "ensemble_qsr", "observable")
NORM_TOL = 1e-8
CAP_KEYS = ("z", "w", "v", "a_out", "b_out")
OPT_KEYS = ("restarts", "seed", "feastol", "d_grid")


class InstanceError(ValueError):
    """Invalid instance file; the message names the file and line."""


# ---------------------------------------------------------------------------
# line-aware YAML loading


class _Located(dict):
    """A mapping that remembers the source line of itself and of each key."""

    line: int = 0
    key_lines: dict


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    m = _Located(loader.construct_mapping(node, deep=True))
    m.line = node.start_mark.line + 1
    m.key_lines = {loader.construct_object(k): k.start_mark.line + 1 for k, _ in node.value}
    return m


class _LocatedList(list):
    line: int = 0
    item_lines: list


def _construct_sequence(loader, node):
    s = _LocatedList(loader.construct_sequence(node, deep=True))
    s.line = node.start_mark.line + 1
    s.item_lines = [v.start_mark.line + 1 for v in node.value]
    return s


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence)


def _line(obj, key=None) -> int:
    if key is not None and isinstance(obj, _Located):
        return obj.key_lines.get(key, obj.line)
    return getattr(obj, "line", 0)


# ---------------------------------------------------------------------------
# the instance record


@dataclass
class InstanceFile:
    kind: str
    systems: SystemLayout
    distortion: str
    state: np.ndarray | None = None
    probs: np.ndarray | None = None
    amplitudes: list[np.ndarray] = field(default_factory=list)
    matrix: np.ndarray | None = None
    caps: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    path: str = ""

    @property
    def total_dim(self) -> int:
        return self.systems.total_dim

    def source_state(self) -> QuantumState:
        """The pure source, or the purification (with X) of an ensemble."""
        if self.kind == "pure_source":
            return QuantumState(self.systems, self.state / np.linalg.norm(self.state))
        return self.ensemble().purified()

    def ensemble(self) -> EnsembleSource:
        if self.kind != "ensemble_source":
            raise InstanceError(f"{self.path}: not an ensemble source")
        # the file tolerates 1e-8 normalization drift; states are renormalized here
        probs = self.probs / self.probs.sum()
        amps = tuple(a / np.linalg.norm(a) for a in self.amplitudes)
        return EnsembleSource(probs, amps, self.systems)

    def rd_instance(self, z_cap: int | None = None) -> RDInstance:
        caps = {k: self.caps.get(k) for k in ("z", "w", "v")}
        if z_cap is not None:
            caps["z"] = z_cap
        caps = {f"{k}_cap": v for k, v in caps.items()}
        t = self.distortion
        if t == "schumacher":
            return schumacher_instance(self.source_state(), **caps)
        if t == "qsr":
            return qsr_instance(self.source_state(), **caps)
        if t in ("ensemble_schumacher", "ensemble_qsr"):
            return ensemble_instance(self.ensemble(), **caps)
        psi = self.source_state()
        names = psi.layout.names
        alice = [n for n in ("A", "C") if n in names]
        bob = [n for n in ("B",) if n in names]
        a_out = int(self.caps.get("a_out") or 1)
        b_out = int(self.caps.get("b_out") or psi.layout.dim(["A"] + bob))
        alice_out = SystemLayout.of(("At", a_out)) if a_out > 1 else SystemLayout()
        bob_out = SystemLayout.of(("Bt", b_out))
        refs = [n for n in names if n not in alice + bob]
        lay = alice_out + bob_out + psi.layout.select(refs)
        return observable_instance(psi, Operator(lay, self.matrix), alice, bob, alice_out, bob_out, **caps)

    def k_instance(self, z_cap: int | None = None) -> KInstance:
        return KInstance(self.ensemble(), z_cap or self.caps.get("z"), self.caps.get("w"), self.caps.get("v"))


def _complex_list(raw, where: str, path: str) -> np.ndarray:
    if not isinstance(raw, list):
        raise InstanceError(f"{path}:{_line(raw)}: {where} must be a list of [re, im] pairs")
    out = []
    lines = getattr(raw, "item_lines", [0] * len(raw))
    for k, v in enumerate(raw):
        if isinstance(v, (int, float)):
            out.append(complex(v))
            continue
        if not (isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v)):
            raise InstanceError(f"{path}:{lines[k]}: {where}[{k}] must be an [re, im] pair")
        out.append(complex(v[0], v[1]))
    return np.array(out, dtype=complex)


def _matrix(raw, dim: int, path: str) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != dim:
        raise InstanceError(f"{path}:{_line(raw)}: observable matrix needs {dim} rows")
    rows = [_complex_list(r, f"matrix row {k}", path) for k, r in enumerate(raw)]
    if any(r.size != dim for r in rows):
        raise InstanceError(f"{path}:{_line(raw)}: observable matrix rows need {dim} entries")
    m = np.array(rows)
    if np.abs(m - m.conj().T).max() > NORM_TOL:
        raise InstanceError(f"{path}:{_line(raw)}: observable matrix is not Hermitian")
    return m


def parse_instance(doc, path: str = "<string>") -> InstanceFile:
    """Validate a parsed YAML document; every error carries ``path:line``."""
    if not isinstance(doc, dict):
        raise InstanceError(f"{path}:1: instance file must be a mapping")

    def need(key):
        if key not in doc:
            raise InstanceError(f"{path}:{_line(doc)}: missing required field {key!r}")
        return doc[key]

    kind = need("kind")
    if kind not in KINDS:
        raise InstanceError(f"{path}:{_line(doc, 'kind')}: kind must be one of {KINDS}, got {kind!r}")
    systems = need("systems")
    if not isinstance(systems, list) or not systems:
        raise InstanceError(f"{path}:{_line(doc, 'systems')}: systems must be a non-empty list")
    regs = []
    for s in systems:
        if not isinstance(s, dict) or set(s) != {"name", "dim"}:
            raise InstanceError(f"{path}:{_line(s)}: each system needs exactly 'name' and 'dim'")
        if not isinstance(s["dim"], int) or s["dim"] < 1:
            raise InstanceError(f"{path}:{_line(s, 'dim')}: dim of {s['name']!r} must be a positive integer")
        regs.append((str(s["name"]), s["dim"]))
    try:
        layout = SystemLayout(tuple(regs))
    except ValueError as e:
        raise InstanceError(f"{path}:{_line(doc, 'systems')}: {e}") from None
    dist = need("distortion")
    if not isinstance(dist, dict) or dist.get("type") not in DISTORTIONS:
        raise InstanceError(f"{path}:{_line(doc, 'distortion')}: distortion.type must be one of {DISTORTIONS}")
    caps = dict(doc.get("caps") or {})
    for k, v in caps.items():
        if k not in CAP_KEYS:
            raise InstanceError(f"{path}:{_line(doc['caps'], k)}: unknown cap {k!r}")
        if v is not None and (not isinstance(v, int) or v < 1):
            raise InstanceError(f"{path}:{_line(doc['caps'], k)}: cap {k!r} must be a positive integer")
    opt = dict(doc.get("optimizer") or {})
    for k in opt:
        if k not in OPT_KEYS:
            raise InstanceError(f"{path}:{_line(doc['optimizer'], k)}: unknown optimizer field {k!r}")
    if "d_grid" in opt:
        opt["d_grid"] = [float(d) for d in opt["d_grid"]]

    inst = InstanceFile(kind, layout, dist["type"], caps=caps, optimizer=opt, path=path)
    if kind == "pure_source":
        raw = need("state")
        v = _complex_list(raw, "state", path)
        if v.size != layout.total_dim:
            raise InstanceError(f"{path}:{_line(doc, 'state')}: state has {v.size} amplitudes, "
                                f"systems need {layout.total_dim}")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1) > NORM_TOL:
            raise InstanceError(f"{path}:{_line(doc, 'state')}: state is not normalized (norm {nrm:.10g})")
        inst.state = v
        if dist["type"].startswith("ensemble"):
            raise InstanceError(f"{path}:{_line(doc, 'distortion')}: {dist['type']} needs an ensemble source")
    else:
        raw = need("ensemble")
        if not isinstance(raw, list) or not raw:
            raise InstanceError(f"{path}:{_line(doc, 'ensemble')}: ensemble must be a non-empty list")
        probs, amps = [], []
        for k, item in enumerate(raw):
            if not isinstance(item, dict) or set(item) != {"prob", "amplitudes"}:
                raise InstanceError(f"{path}:{_line(item)}: ensemble[{k}] needs 'prob' and 'amplitudes'")
            v = _complex_list(item["amplitudes"], f"ensemble[{k}].amplitudes", path)
            if v.size != layout.total_dim:
                raise InstanceError(f"{path}:{_line(item, 'amplitudes')}: ensemble[{k}] has {v.size} amplitudes, "
                                    f"systems need {layout.total_dim}")
            nrm = np.linalg.norm(v)
            if abs(nrm - 1) > NORM_TOL:
                raise InstanceError(f"{path}:{_line(item, 'amplitudes')}: ensemble[{k}] is not normalized "
                                    f"(norm {nrm:.10g})")
            p = float(item["prob"])
            if p < 0:
                raise InstanceError(f"{path}:{_line(item, 'prob')}: ensemble[{k}] has a negative probability")
            probs.append(p)
            amps.append(v)
        total = sum(probs)
        if abs(total - 1) > NORM_TOL:
            raise InstanceError(f"{path}:{_line(doc, 'ensemble')}: probabilities sum to {total:.10g}, not 1")
        inst.probs = np.array(probs)
        inst.amplitudes = amps
        if dist["type"] in ("schumacher", "qsr"):
            raise InstanceError(f"{path}:{_line(doc, 'distortion')}: {dist['type']} needs a pure source")
    if dist["type"] == "observable":
        if "matrix" not in dist:
            raise InstanceError(f"{path}:{_line(doc, 'distortion')}: observable distortion needs 'matrix'")
        probe = inst.source_state()
        names = probe.layout.names
        bob = [n for n in ("B",) if n in names]
        a_out = int(caps.get("a_out") or 1)
        b_out = int(caps.get("b_out") or probe.layout.dim(["A"] + bob))
        refs = [n for n in names if n not in ("A", "C", "B")]
        dim = a_out * b_out * probe.layout.dim(refs)
        inst.matrix = _matrix(dist["matrix"], dim, path)
    try:
        inst.rd_instance()
    except ValueError as e:
        raise InstanceError(f"{path}:{_line(doc, 'distortion')}: {e}") from None
    return inst


def load_instance(path) -> InstanceFile:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InstanceError(f"{path}: cannot read instance file ({e.strerror})") from None
    return loads_instance(text, path)


def loads_instance(text: str, path: str = "<string>") -> InstanceFile:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise InstanceError(f"{path}:{line}: YAML parse error: {getattr(e, 'problem', e)}") from None
    return parse_instance(doc, path)


def _pairs(v: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v).reshape(-1)]


def serialize(inst: InstanceFile) -> str:
    """YAML text that :func:`loads_instance` maps back to an equal record."""
    doc: dict = {"kind": inst.kind, "systems": [{"name": n, "dim": d} for n, d in inst.systems]}
    if inst.kind == "pure_source":
        doc["state"] = _pairs(inst.state)
    else:
        doc["ensemble"] = [{"prob": float(p), "amplitudes": _pairs(a)} for p, a in zip(inst.probs, inst.amplitudes)]
    dist: dict = {"type": inst.distortion}
    if inst.matrix is not None:
        dist["matrix"] = [_pairs(row) for row in inst.matrix]
    doc["distortion"] = dist
    if inst.caps:
        doc["caps"] = dict(inst.caps)
    if inst.optimizer:
        doc["optimizer"] = dict(inst.optimizer)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def instances_equal(a: InstanceFile, b: InstanceFile) -> bool:
    def same(x, y):
        if x is None or y is None:
            return x is None and y is None
        return np.array_equal(np.asarray(x), np.asarray(y))

    return (a.kind == b.kind and a.systems == b.systems and a.distortion == b.distortion
            and same(a.state, b.state) and same(a.probs, b.probs) and same(a.matrix, b.matrix)
            and len(a.amplitudes) == len(b.amplitudes)
            and all(same(x, y) for x, y in zip(a.amplitudes, b.amplitudes))
            and a.caps == b.caps and a.optimizer == b.optimizer)


# ---------------------------------------------------------------------------
# result files


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    return o


@dataclass
class ResultFile:
    """Run metadata plus a payload (curve, K points or chain reports).

    Wall time is recorded only on request so that repeated runs with the same
    flags produce byte-identical files.
    """

    command: str
    seed: int
    caps: dict
    payload: dict
    flags: dict = field(default_factory=dict)
    wall_time_s: float | None = None
    version: str = __version__

    def to_record(self) -> dict:
        r = {"tool": "qsrd", "version": self.version, "command": self.command, "seed": self.seed,
             "caps": self.caps, "flags": self.flags, "payload": self.payload}
        if self.wall_time_s is not None:
            r["wall_time_s"] = self.wall_time_s
        return _jsonable(r)

    def dumps(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=2) + "\n"

    def write(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def from_record(cls, r: dict) -> "ResultFile":
        return cls(r["command"], r["seed"], r["caps"], r["payload"], r.get("flags", {}), r.get("wall_time_s"),
                   r.get("version", __version__))

    @classmethod
    def loads(cls, text: str) -> "ResultFile":
        return cls.from_record(json.loads(text))
