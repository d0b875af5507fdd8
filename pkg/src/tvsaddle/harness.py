"""Experiment orchestration: seeded repeats, CSV and summary emission, plots."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, from_dict
from .exceptions import ConfigError, IoError, NonFiniteIterate
from .graphs import (
    BUILDERS,
    adversarial_taab_sequence,
    format_edge_list,
    markov_sequence,
    random_extra_edges,
    skeleton_sequence,
    static_sequence,
)
from .lowerbound import floor_series
from .problems import Box, hard_instance_dimension, make_bilinear_problem, make_lower_bound_problem
from .solver import CSV_HEADER, SolverConfig, desm_run, resolve

# Each repeat seed is mixed with the graph seed and split into independent
# streams for the problem, the graph and the consensus randomness.
_STREAMS = ("problem", "graph", "consensus")


def repeat_streams(repeat_seed, graph_seed):
    children = np.random.SeedSequence([int(repeat_seed), int(graph_seed)]).spawn(len(_STREAMS))
    return {name: int(c.generate_state(1)[0]) for name, c in zip(_STREAMS, children)}


def _as_edges(pairs):
    return [tuple(e) for e in pairs] if pairs is not None else None


def build_sequence(cfg: ExperimentConfig, seed: int):
    g = cfg.graph
    M = cfg.node_count
    kind = g["kind"]
    rng = np.random.default_rng(seed)
    if kind == "adversarial_taab":
        return adversarial_taab_sequence(g["d"])
    base = BUILDERS[g["topology"]](M)
    if kind == "static":
        extra = _as_edges(g["edges"]) or random_extra_edges(base, g["extra_edges"], rng)
        return static_sequence(base.union(extra))
    if kind == "skeleton_nonrecoverable":
        volatile = _as_edges(g["volatile_edges"]) or random_extra_edges(base, g["volatile"], rng)
        return skeleton_sequence(base, volatile, g["fail_prob"], seed=rng.integers(2**63))
    candidates = _as_edges(g["candidate_edges"]) or random_extra_edges(base, g["candidates"], rng)
    return markov_sequence(base, candidates, g["flip_prob"], seed=rng.integers(2**63))


def lower_bound_dimension(cfg: ExperimentConfig):
    """``n`` for the hard instance; ``"auto"`` sizes it for the rounds the run can consume."""
    p = cfg.problem
    if p["n"] != "auto":
        return p["n"]
    H = cfg.solver["H"]
    if H is None:
        raise ConfigError("problem.n", "'auto' needs an explicit solver.H to bound the consumed rounds")
    return hard_instance_dimension(p["L"], p["mu"], 2 * cfg.solver["N"] * H)


def build_problem(cfg: ExperimentConfig, seed: int):
    p = cfg.problem
    if p["family"] == "lower_bound":
        return make_lower_bound_problem(p["d"], p["L"], p["mu"], lower_bound_dimension(cfg))
    box = None
    if p["box"] is not None:
        box = Box.uniform(2 * p["n"], *p["box"])
    return make_bilinear_problem(p["M"], p["n"], seed=seed, L=p["L"], mu=p["mu"], feasible_set=box)


def solver_config(cfg: ExperimentConfig, consensus_seed: int) -> SolverConfig:
    params = dict(cfg.consensus["params"])
    if cfg.consensus["kind"] == "acogwmc":
        params.setdefault("random_state", consensus_seed)
    s = cfg.solver
    return SolverConfig(
        gamma=s["gamma"],
        H=s["H"],
        N=s["N"],
        consensus_kind=cfg.consensus["kind"],
        consensus_params=params,
        metrics_every=cfg.output["checkpoint_stride"],
        eps=s["eps"],
        eps0=s["eps0"],
        divergence_threshold=s["divergence_threshold"],
    )


# -- CSV -------------------------------------------------------------------------------

def format_value(v) -> str:
    """Locale-independent shortest round-trip text for a CSV cell."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(format_value(v) for v in row) + "\n")
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def aggregate_rows(records):
    """Median over repeats, checkpoint by checkpoint."""
    n = min(len(r) for r in records)
    table = np.array([[tuple(cp) for cp in r.checkpoints[:n]] for r in records], dtype=float)
    rows = []
    for row in np.median(table, axis=0):
        counters = [int(v) if v.is_integer() else float(v) for v in row[:3]]
        rows.append((*counters, float(row[3]), float(row[4])))
    return rows


@dataclass
class ExperimentResult:
    out_dir: Path
    records: dict
    summary: dict
    files: list


def _summary(cfg, records, problem, seq, settings):
    finals = [r.checkpoints[-1] for r in records.values()]
    def med(name):
        v = float(np.median([getattr(c, name) for c in finals]))
        return int(v) if name != "dist_sq" and name != "consensus_err" and v.is_integer() else v

    out = {
        "family": cfg.problem["family"],
        "graph": cfg.graph["kind"],
        "consensus": cfg.consensus["kind"],
        "repeats": len(records),
        "nodes": problem.node_count,
        "dim": problem.dim_z,
        "chi": seq.chi(),
        "L": problem.L,
        "L_max": problem.L_max,
        "mu": problem.mu,
        "gamma": settings["gamma"],
        "H": settings["H"],
        "iterations": finals[0].k,
        "total_rounds": med("K"),
        "oracle_calls": med("oracle_calls"),
        "final_consensus_err": med("consensus_err"),
        "final_dist_sq": med("dist_sq"),
    }
    aborted = [s for s, r in records.items() if r.aborted]
    if aborted:
        out["aborted_seeds"] = " ".join(map(str, aborted))
    return out


def summary_text(summary: dict) -> str:
    return "".join(f"{k}={format_value(v) if isinstance(v, (int, float)) else v}\n" for k, v in summary.items())


def run_experiment(cfg: ExperimentConfig, out_dir=None, plot=None, quiet=True) -> ExperimentResult:
    """Run every repeat and write the artifact files.

    Files: ``seed_<s>.csv`` per repeat, ``aggregate.csv`` (median over repeats),
    ``summary.txt``; for the hard instance also ``floor.csv`` and, on request,
    the matrices ``A1.csv``, ``A2.csv``, ``A.csv``; ``plot.svg`` when plotting.
    """
    out = Path(cfg.output["dir"] if out_dir is None else out_dir)
    plot = cfg.output["plot"] if plot is None else plot
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc.strerror}") from exc

    records, files = {}, []
    problem = seq = settings = None
    for s in cfg.repeats:
        streams = repeat_streams(s, cfg.graph["seed"])
        problem = build_problem(cfg, streams["problem"])
        seq = build_sequence(cfg, streams["graph"])
        scfg = solver_config(cfg, streams["consensus"])
        try:
            record = desm_run(problem, seq, scfg)
        except NonFiniteIterate as exc:
            record = exc.record
        records[s] = record
        path = out / f"seed_{s}.csv"
        _write(path, csv_text(CSV_HEADER, record.checkpoints))
        files.append(path)
        if settings is None:
            z0 = problem.project(np.zeros(problem.dim_z))
            settings = resolve(problem, seq, scfg, z0)

    agg = aggregate_rows(list(records.values()))
    path = out / "aggregate.csv"
    _write(path, csv_text(CSV_HEADER, agg))
    files.append(path)

    floor = None
    if cfg.problem["family"] == "lower_bound":
        floor = floor_series(problem, seq, records[cfg.repeats[0]])
        path = out / "floor.csv"
        _write(path, csv_text(("K", "floor", "measured"), floor))
        files.append(path)
        if cfg.output["dump_matrices"]:
            for name in ("A1", "A2", "A"):
                dense = getattr(problem, name).toarray()
                path = out / f"{name}.csv"
                _write(path, "".join(",".join(format_value(v) for v in row) + "\n" for row in dense))
                files.append(path)

    summary = _summary(cfg, records, problem, seq, settings)
    path = out / "summary.txt"
    _write(path, summary_text(summary))
    files.append(path)
    if plot:
        path = out / "plot.svg"
        plot_run(agg, problem, settings, floor, path)
        files.append(path)
    if not quiet:
        print(summary_text(summary), end="")
    return ExperimentResult(out, records, summary, files)


def plot_run(agg, problem, settings, floor, path):
    """Single-pane ``log10 dist_sq`` against communication rounds with the
    predicted rate and, for the hard instance, the floor overlaid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    K = np.array([r[1] for r in agg])
    dist = np.array([r[4] for r in agg])
    # fixed id salt keeps the SVG byte-identical across runs
    matplotlib.rcParams["svg.hashsalt"] = "tvsaddle"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(K, np.log10(np.maximum(dist, 1e-300)), label="measured (median)")
    H = settings["H"]
    if H > 0 and dist[0] > 0:
        rate = problem.mu / (8.0 * problem.L * H)
        ax.plot(K, np.log10(dist[0]) - rate * K / math.log(10.0), "--", label="predicted rate")
    if floor is not None:
        fl = np.array([r[1] for r in floor])
        ax.plot([r[0] for r in floor], np.log10(np.maximum(fl, 1e-300)), ":", label="floor")
    ax.set_xlabel("communication rounds")
    ax.set_ylabel("log10 squared distance")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc
    finally:
        plt.close(fig)


# -- presets -------------------------------------------------------------------------------

PRESETS = {
    "skeleton": (
        "bilinear saddle over a ring skeleton with failing extra links, accelerated gossip",
        {
            "repeats": [42, 43, 44],
            "problem": {"family": "bilinear", "M": 8, "n": 4, "L": 5.0, "mu": 1.0},
            "graph": {"kind": "skeleton_nonrecoverable", "topology": "ring", "volatile": 6, "fail_prob": 0.05, "seed": 7},
            "solver": {"N": 150, "eps": 1e-6},
            "consensus": {"kind": "acc_gossip_nonrecoverable"},
            "output": {"dir": "runs/skeleton", "checkpoint_stride": 5},
        },
    ),
    "markov": (
        "bilinear saddle over a ring with Markov-flipping extra links, multilevel consensus",
        {
            "repeats": [42, 43, 44],
            "problem": {"family": "bilinear", "M": 8, "n": 4, "L": 5.0, "mu": 1.0},
            "graph": {"kind": "markovian", "topology": "ring", "candidates": 2, "flip_prob": 0.25, "seed": 7},
            "solver": {"N": 150, "eps": 1e-6, "H": 60},
            "consensus": {"kind": "acogwmc", "params": {"gamma": 0.2}},
            "output": {"dir": "runs/markov", "checkpoint_stride": 5},
        },
    ),
    "lowerbound-demo": (
        "hard instance over the adversarial tree sequence (d = 3, L/mu = 4) with its error floor",
        {
            "repeats": [42],
            "problem": {"family": "lower_bound", "d": 3, "L": 4.0, "mu": 1.0, "n": "auto"},
            "graph": {"kind": "adversarial_taab", "seed": 0},
            "solver": {"N": 60, "H": 3},
            "consensus": {"kind": "plain"},
            "output": {"dir": "runs/lowerbound-demo", "checkpoint_stride": 1},
        },
    ),
}
PRESETS["adversarial"] = ("alias of lowerbound-demo", PRESETS["lowerbound-demo"][1])


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("<preset>", f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return from_dict(PRESETS[name][1])


def graph_dump_lines(cfg: ExperimentConfig, rounds: int):
    """Edge lists of the first ``rounds`` graphs for the first repeat seed."""
    seq = build_sequence(cfg, repeat_streams(cfg.repeats[0], cfg.graph["seed"])["graph"])
    return [format_edge_list(k, seq.graph_at(k)) for k in range(rounds)]


__all__ = [
    "ExperimentResult",
    "PRESETS",
    "build_problem",
    "build_sequence",
    "csv_text",
    "format_value",
    "graph_dump_lines",
    "preset",
    "run_experiment",
]
