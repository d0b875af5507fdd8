"""Experiment configuration: a small TOML schema with explicit seeds.

Parsing fills in defaults, so ``parse(dumps(parse(text))) == parse(text)``.
Every schema violation raises :class:`ConfigError` carrying the dotted path of
the offending field.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .consensus import CONSENSUS_KINDS
from .exceptions import ConfigError
from .graphs import BUILDERS, SEQUENCE_KINDS, taab_layout

PROBLEM_FAMILIES = ("bilinear", "lower_bound")

_PROBLEM_KEYS = {
    "bilinear": {"family": "bilinear", "M": 5, "n": 4, "L": 10.0, "mu": 1.0, "box": None},
    "lower_bound": {"family": "lower_bound", "d": 3, "n": "auto", "L": 4.0, "mu": 1.0},
}
_GRAPH_KEYS = {
    "static": {"kind": "static", "topology": "ring", "extra_edges": 0, "edges": None, "seed": 0},
    "skeleton_nonrecoverable": {
        "kind": "skeleton_nonrecoverable",
        "topology": "ring",
        "volatile": 4,
        "volatile_edges": None,
        "fail_prob": 0.05,
        "seed": 0,
    },
    "markovian": {
        "kind": "markovian",
        "topology": "ring",
        "candidates": 4,
        "candidate_edges": None,
        "flip_prob": 0.25,
        "seed": 0,
    },
    "adversarial_taab": {"kind": "adversarial_taab", "d": None, "seed": 0},
}
_SOLVER_KEYS = {"N": 100, "gamma": None, "H": None, "eps": 1e-6, "eps0": None, "divergence_threshold": 1e12}
_OUTPUT_KEYS = {"dir": "runs/experiment", "checkpoint_stride": 1, "plot": False, "dump_matrices": False}
_TOP_KEYS = ("repeats", "problem", "graph", "solver", "consensus", "output")


def _section(raw, name):
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a table")
    return value


def _merge(path, defaults, given):
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    out = dict(defaults)
    out.update(given)
    return out


def _check_number(path, value, *, integer=False, lo=None, hi=None, lo_open=False, hi_open=False):
    kinds = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigError(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {value!r}")
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise ConfigError(path, f"must be {'<' if hi_open else '<='} {hi}, got {value!r}")
    return value


def _check_edges(path, edges, M):
    if not isinstance(edges, list):
        raise ConfigError(path, "expected a list of [i, j] pairs")
    for t, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) and 0 <= v < M for v in e) and e[0] != e[1]):
            raise ConfigError(f"{path}[{t}]", f"expected two distinct vertices in 0..{M - 1}, got {e!r}")


@dataclass
class ExperimentConfig:
    problem: dict
    graph: dict
    solver: dict = field(default_factory=lambda: dict(_SOLVER_KEYS))
    consensus: dict = field(default_factory=lambda: {"kind": "acc_gossip_nonrecoverable", "params": {}})
    output: dict = field(default_factory=lambda: dict(_OUTPUT_KEYS))
    repeats: list = field(default_factory=lambda: [42])

    @property
    def node_count(self):
        if self.problem["family"] == "lower_bound":
            return taab_layout(self.problem["d"]).vertex_count
        return self.problem["M"]

    def to_dict(self):
        """Plain nested dict without ``None`` entries (TOML has no null)."""

        def strip(d):
            return {k: strip(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}

        return strip(
            {
                "repeats": list(self.repeats),
                "problem": self.problem,
                "graph": self.graph,
                "solver": self.solver,
                "consensus": self.consensus,
                "output": self.output,
            }
        )

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def replace(self, **sections):
        """Copy with some sections updated key by key, then re-validated."""
        raw = copy.deepcopy(self.to_dict())
        for name, updates in sections.items():
            if name == "repeats":
                raw["repeats"] = list(updates)
            else:
                raw.setdefault(name, {}).update(updates)
        return from_dict(raw)


def from_dict(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a table")
    unknown = sorted(set(raw) - set(_TOP_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    raw = copy.deepcopy(raw)

    prob = _section(raw, "problem")
    family = prob.get("family")
    if family not in PROBLEM_FAMILIES:
        raise ConfigError("problem.family", f"unknown family {family!r}; expected one of {', '.join(PROBLEM_FAMILIES)}")
    prob = _merge("problem", _PROBLEM_KEYS[family], prob)
    _check_number("problem.mu", prob["mu"], lo=0, lo_open=True)
    _check_number("problem.L", prob["L"], lo=prob["mu"], lo_open=True)
    if family == "bilinear":
        _check_number("problem.M", prob["M"], integer=True, lo=1)
        _check_number("problem.n", prob["n"], integer=True, lo=1)
        box = prob["box"]
        if box is not None and not (
            isinstance(box, list) and len(box) == 2 and all(isinstance(v, (int, float)) for v in box) and box[0] < box[1]
        ):
            raise ConfigError("problem.box", f"expected [lower, upper] with lower < upper, got {box!r}")
        M = prob["M"]
    else:
        _check_number("problem.d", prob["d"], integer=True, lo=2)
        if prob["n"] != "auto":
            _check_number("problem.n", prob["n"], integer=True, lo=2)
        M = taab_layout(prob["d"]).vertex_count

    graph = _section(raw, "graph")
    kind = graph.get("kind")
    if kind not in SEQUENCE_KINDS:
        raise ConfigError("graph.kind", f"unknown kind {kind!r}; expected one of {', '.join(SEQUENCE_KINDS)}")
    graph = _merge("graph", _GRAPH_KEYS[kind], graph)
    _check_number("graph.seed", graph["seed"], integer=True, lo=0)
    if "topology" in graph and graph["topology"] not in BUILDERS:
        raise ConfigError("graph.topology", f"unknown topology {graph['topology']!r}; expected one of {', '.join(BUILDERS)}")
    for key in ("extra_edges", "volatile", "candidates"):
        if key in graph:
            _check_number(f"graph.{key}", graph[key], integer=True, lo=0)
    for key in ("edges", "volatile_edges", "candidate_edges"):
        if graph.get(key) is not None:
            _check_edges(f"graph.{key}", graph[key], M)
    if kind == "skeleton_nonrecoverable":
        _check_number("graph.fail_prob", graph["fail_prob"], lo=0, hi=1)
    if kind == "markovian":
        _check_number("graph.flip_prob", graph["flip_prob"], lo=0, hi=1, lo_open=True, hi_open=True)
    if kind == "adversarial_taab":
        if graph["d"] is None and family == "lower_bound":
            graph["d"] = prob["d"]
        if graph["d"] is None:
            raise ConfigError("graph.d", "required unless the problem family provides it")
        _check_number("graph.d", graph["d"], integer=True, lo=2)
        if family == "lower_bound" and graph["d"] != prob["d"]:
            raise ConfigError("graph.d", f"must equal problem.d = {prob['d']}")
        tree_size = taab_layout(graph["d"]).vertex_count
        if tree_size != M:
            raise ConfigError("graph.d", f"the tree sequence for d = {graph['d']} has {tree_size} vertices, problem has M = {M}")

    solver = _merge("solver", _SOLVER_KEYS, _section(raw, "solver"))
    _check_number("solver.N", solver["N"], integer=True, lo=0)
    if solver["gamma"] is not None:
        _check_number("solver.gamma", solver["gamma"], lo=0, lo_open=True)
    if solver["H"] is not None:
        _check_number("solver.H", solver["H"], integer=True, lo=0)
    _check_number("solver.eps", solver["eps"], lo=0, hi=1, lo_open=True, hi_open=True)
    if solver["eps0"] is not None:
        _check_number("solver.eps0", solver["eps0"], lo=0, lo_open=True)
    _check_number("solver.divergence_threshold", solver["divergence_threshold"], lo=0, lo_open=True)

    cons = _merge("consensus", {"kind": "acc_gossip_nonrecoverable", "params": {}}, _section(raw, "consensus"))
    if cons["kind"] not in CONSENSUS_KINDS:
        raise ConfigError("consensus.kind", f"unknown kind {cons['kind']!r}; expected one of {', '.join(CONSENSUS_KINDS)}")
    if not isinstance(cons["params"], dict):
        raise ConfigError("consensus.params", "expected a table")
    allowed = CONSENSUS_KINDS[cons["kind"]]()._get_param_names()
    for key in cons["params"]:
        if key not in allowed:
            raise ConfigError(f"consensus.params.{key}", f"not a parameter of {cons['kind']}")
    if cons["kind"] == "acogwmc" and kind != "markovian":
        raise ConfigError("consensus.kind", "acogwmc needs graph.kind = 'markovian'")

    out = _merge("output", _OUTPUT_KEYS, _section(raw, "output"))
    if not isinstance(out["dir"], str) or not out["dir"]:
        raise ConfigError("output.dir", "expected a non-empty path string")
    _check_number("output.checkpoint_stride", out["checkpoint_stride"], integer=True, lo=1)
    for key in ("plot", "dump_matrices"):
        if not isinstance(out[key], bool):
            raise ConfigError(f"output.{key}", "expected true or false")

    repeats = raw.get("repeats", [42])
    if not isinstance(repeats, list) or not repeats:
        raise ConfigError("repeats", "expected a non-empty list of seeds")
    for t, s in enumerate(repeats):
        _check_number(f"repeats[{t}]", s, integer=True, lo=0)
    if len(set(repeats)) != len(repeats):
        raise ConfigError("repeats", "seeds must be distinct")

    return ExperimentConfig(prob, graph, solver, cons, out, list(repeats))


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from None
    return from_dict(raw)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return loads(text)
