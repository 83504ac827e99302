"""End-to-end workflows behind the CLI commands.

Each ``run_*`` function takes a validated :class:`ExperimentConfig`, writes its
artifacts into ``config.output_dir`` and returns the in-memory results.
Callers that already hold model samples can pass them in to skip re-solving.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CALIBRATED_WIDTHS, NAMED_MAPS
from .domain import ParameterBox, make_rng, nearest_index, sample_uniform
from .errors import ConfigError, NumericalFailureError
from .inverse import (
    build_output_probability,
    marginal_2d,
    push_forward,
    solve_inverse,
    support_measure,
)
from .jacobian import build_jacobian_field
from .models import DiffusionModel, LinearMapModel, PlateExperiment, PolynomialMapModel
from .models.diffusion import KAPPA_RANGE, default_sensor_layout, desk_sensor_layout
from .optimize import OptimizationProblem, enumerate_and_score, pareto_front, select
from .verification import ContourEvent, convergence_study

log = logging.getLogger(__name__)


# -- model construction -------------------------------------------------------

def build_model(cfg):
    """Forward model and parameter box described by ``cfg.model`` / ``cfg.domain``."""
    block = cfg.model
    kind = block["kind"]
    if kind == "linear":
        model = LinearMapModel(block["matrix"])
        default_box = ParameterBox.unit(model.param_dim)
    elif kind == "polynomial":
        if block.get("coefficients"):
            model = PolynomialMapModel(block["coefficients"])
        else:
            model = PolynomialMapModel.random(int(block["num_qoi"]), int(block["coefficient_seed"]))
        default_box = ParameterBox.unit(2)
    else:
        pde = DiffusionModel(
            cells=int(block["cells"]), steps=int(block["steps"]), num_saved=int(block["num_saved"]),
            t_final=float(block["t_final"]), rho_c=float(block["rho_c"]),
            amplitude=float(block["amplitude"]), source_width=float(block["source_width"]),
            source_position=tuple(block["source_position"]))
        sensors = block["sensors"]
        if sensors == "desk":
            sensors = desk_sensor_layout()
        elif sensors == "full":
            sensors = default_sensor_layout()
        model = PlateExperiment(pde, np.asarray(sensors, dtype=float), tuple(block["levels"]),
                                float(block["radius"]), tuple(block["prediction_source"]),
                                tuple(block["prediction_strip"]))
        default_box = ParameterBox([KAPPA_RANGE[0]] * 2, [KAPPA_RANGE[1]] * 2)
    box = default_box if cfg.domain is None else ParameterBox(cfg.domain["lower"],
                                                              cfg.domain["upper"])
    return model, box


def evaluate_model(model, points, workers=1):
    """All candidate QoI (and plate predictions, else ``None``) at each point."""
    points = np.atleast_2d(points)
    if not isinstance(model, PlateExperiment):
        return np.atleast_2d(model(points)), None
    if workers <= 1 or len(points) < 2:
        return model.evaluate_samples(points)

    def one(i):
        try:
            return model.evaluate(points[i])
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"sample {i}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(one, range(len(points))))
    return np.array([p[0] for p in parts]), np.array([p[1] for p in parts])


@dataclass
class SampledModel:
    model: object
    samples: object
    predictions: np.ndarray | None


def sample_model(cfg, workers=1):
    model, box = build_model(cfg)
    samples = sample_uniform(box, cfg.sampling.num_samples, cfg.sampling.seed)
    qoi, pred = evaluate_model(model, samples.points, workers)
    return SampledModel(model, samples.with_qoi(qoi), pred)


def describe_subset(model, subset):
    """Human-readable labels for the QoI of ``subset``."""
    if isinstance(model, PlateExperiment):
        out = []
        for q in subset:
            sensor, level = model.describe(q)
            out.append({"qoi": int(q), "sensor": sensor, "level": level,
                        "position": model.sensors[sensor].tolist(),
                        "side": model.sensor_side(sensor)})
        return out
    return [{"qoi": int(q)} for q in subset]


# -- output helpers -----------------------------------------------------------

def fmt(x):
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=";", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(type(obj))


def _prepare_output(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps() + "\n")
    return out


def subset_label(subset):
    return ",".join(str(int(q)) for q in subset)


# -- optimize -----------------------------------------------------------------

@dataclass
class OptimizeResult:
    scores: list
    rejected: list
    front: list
    winners: dict
    field: object
    sampled: SampledModel


def compute_field(cfg, sampled):
    jc = cfg.jacobian
    n_sites = len(sampled.samples) if jc.sites is None else jc.sites
    # samples are i.i.d., so the first n_sites form a uniform random subset
    return build_jacobian_field(sampled.samples, np.arange(n_sites), jc.k, jc.method,
                                model=sampled.model)


def optimize(cfg, sampled=None, workers=1):
    if sampled is None:
        sampled = sample_model(cfg, workers)
    field = compute_field(cfg, sampled)
    d = field.num_qoi
    problem = OptimizationProblem(field, cfg.design.m, cfg.resolved_widths(cfg.design.widths, d),
                                  cfg.design.omega, cfg.design.objective)
    scores, rejected = enumerate_and_score(problem, return_rejected=True)
    front = pareto_front(scores)
    winners = {obj: select(scores, obj)
               for obj in ("min-measure", "min-skewness", "min-distance", "max-distance")}
    return OptimizeResult(scores, rejected, front, winners, field, sampled)


def _score_row(s):
    return [subset_label(s.subset), s.avg_measure, s.avg_skewness, s.distance,
            s.distance_table_convention]


SCORE_HEADER = ["subset", "avg_measure", "avg_skewness", "distance", "distance_table_convention"]


def run_optimize(cfg, sampled=None, workers=1):
    """Write ``scores.csv``, ``pareto.csv`` and ``summary.json``."""
    result = optimize(cfg, sampled, workers)
    out = _prepare_output(cfg)
    write_csv(out / "scores.csv", SCORE_HEADER, (_score_row(s) for s in result.scores))
    write_csv(out / "pareto.csv", SCORE_HEADER, (_score_row(s) for s in result.front))
    model = result.sampled.model
    summary = {
        "objective": cfg.design.objective,
        "selected": _winner_record(result.winners[cfg.design.objective], model),
        "winners": {k: _winner_record(v, model) for k, v in result.winners.items()},
        "num_candidates": len(result.scores) + len(result.rejected),
        "num_rejected": len(result.rejected),
        "pareto_size": len(result.front),
        "jacobian_sites": len(result.field),
        "config": cfg.to_dict(),
    }
    write_json(out / "summary.json", summary)
    return result


def _winner_record(score, model):
    return {"subset": list(score.subset), "avg_measure": score.avg_measure,
            "avg_skewness": score.avg_skewness, "distance": score.distance,
            "distance_table_convention": score.distance_table_convention,
            "qoi": describe_subset(model, score.subset)}


# -- invert / predict ---------------------------------------------------------

@dataclass
class InvertResult:
    solution: object
    subset: tuple
    lambda_ref: np.ndarray | None
    q_ref: np.ndarray
    support: float
    reference_probability: float | None
    prediction: object
    prior_prediction: object
    sampled: SampledModel


def reference_parameter(cfg, box):
    """``lambda_ref`` from the config, else drawn from stream ``(seed, 1)``."""
    if cfg.inverse.lambda_ref is not None:
        return np.asarray(cfg.inverse.lambda_ref, dtype=float)
    rng = make_rng(cfg.sampling.seed, 1)
    return box.lower + rng.random(box.dim) * box.widths


def choose_subset(cfg, sampled, workers=1):
    if cfg.inverse.subset is not None:
        return tuple(int(q) for q in cfg.inverse.subset)
    objective = cfg.inverse.objective or cfg.design.objective
    return optimize(cfg, sampled, workers).winners[objective].subset


def invert(cfg, sampled=None, subset=None, workers=1):
    if sampled is None:
        sampled = sample_model(cfg, workers)
    if subset is None:
        subset = choose_subset(cfg, sampled, workers)
    subset = tuple(int(q) for q in subset)
    inv = cfg.inverse
    box = sampled.samples.box
    lam_ref = None
    if inv.q_ref is not None:
        q_ref = np.asarray(inv.q_ref, dtype=float)
        if q_ref.size != len(subset):
            q_ref = q_ref[list(subset)]
    else:
        lam_ref = reference_parameter(cfg, box)
        q_ref = np.atleast_2d(evaluate_model(sampled.model, lam_ref[None, :])[0])[0][list(subset)]
    density = build_output_probability(q_ref, cfg.resolved_widths(inv.widths, len(subset)),
                                       inv.grid)
    solution = solve_inverse(sampled.samples, subset, density, inv.volume_mode,
                             inv.num_reference, seed=cfg.sampling.seed, workers=workers)
    ref_prob = None
    if lam_ref is not None:
        ref_prob = float(solution.cell_probabilities[nearest_index(lam_ref,
                                                                   sampled.samples.points)])
    values = prediction_values(cfg, sampled)
    pred = prior = None
    if values is not None:
        pred = push_forward(solution, values, bins=inv.prediction_bins)
        prior = (float(values.min()), float(values.max()))
    return InvertResult(solution, subset, lam_ref, q_ref, support_measure(solution), ref_prob,
                        pred, prior, sampled)


def prediction_values(cfg, sampled):
    choice = cfg.inverse.prediction
    if choice is None and sampled.predictions is not None:
        choice = "model"
    if choice is None:
        return None
    if choice == "model":
        return sampled.predictions
    return sampled.samples.qoi_values[:, int(choice)]


def _write_prediction(out, result):
    rows = [["interval", result.prediction.lower, result.prediction.upper, ""],
            ["full_interval", result.prior_prediction[0], result.prior_prediction[1], ""]]
    edges, weights = result.prediction.edges, result.prediction.weights
    rows += [["bin", edges[b], edges[b + 1], weights[b]] for b in range(weights.size)]
    write_csv(out / "prediction.csv", ["record", "lower", "upper", "probability"], rows)


def _invert_summary(cfg, result):
    sol = result.solution
    summary = {
        "subset": list(result.subset),
        "qoi": describe_subset(result.sampled.model, result.subset),
        "lambda_ref": result.lambda_ref,
        "q_ref": result.q_ref,
        "support_measure": result.support,
        "lost_mass": sol.lost_mass,
        "normalized": sol.normalized,
        "reference_cell_probability": result.reference_probability,
        "config": cfg.to_dict(),
    }
    if result.prediction is not None:
        summary["prediction_interval"] = [result.prediction.lower, result.prediction.upper]
        summary["full_prediction_interval"] = list(result.prior_prediction)
    return summary


def run_invert(cfg, sampled=None, subset=None, workers=1):
    """Write ``inverse.csv``, ``marginals_<i>_<j>.csv`` and (if available) ``prediction.csv``."""
    result = invert(cfg, sampled, subset, workers)
    out = _prepare_output(cfg)
    samples, sol = result.sampled.samples, result.solution
    n = samples.box.dim
    header = ["sample_index"] + [f"lambda_{j}" for j in range(n)] + ["p_lambda", "cell_index"]
    write_csv(out / "inverse.csv", header,
              ([i, *samples.points[i], sol.cell_probabilities[i], int(sol.assignment[i])]
               for i in range(len(samples))))
    for i in range(n):
        for j in range(i + 1, n):
            mass, e1, e2 = marginal_2d(sol, samples, (i, j), cfg.inverse.marginal_grid)
            rows = ([e1[a], e1[a + 1], e2[b], e2[b + 1], mass[a, b]]
                    for a in range(mass.shape[0]) for b in range(mass.shape[1]))
            write_csv(out / f"marginals_{i}_{j}.csv",
                      [f"lambda_{i}_lower", f"lambda_{i}_upper", f"lambda_{j}_lower",
                       f"lambda_{j}_upper", "mass"], rows)
    if result.prediction is not None:
        _write_prediction(out, result)
    write_json(out / "inverse_summary.json", _invert_summary(cfg, result))
    return result


def run_predict(cfg, sampled=None, subset=None, workers=1):
    """Write only ``prediction.csv`` (plus a summary) for the configured inverse problem."""
    result = invert(cfg, sampled, subset, workers)
    if result.prediction is None:
        raise ConfigError("inverse.prediction", "no prediction functional configured")
    out = _prepare_output(cfg)
    _write_prediction(out, result)
    write_json(out / "prediction_summary.json", _invert_summary(cfg, result))
    return result


# -- converge -----------------------------------------------------------------

def convergence_events(cfg, box):
    events = []
    for mp in cfg.convergence.maps:
        matrix = mp.matrix if mp.matrix is not None else NAMED_MAPS[mp.name]
        width = mp.width if mp.width is not None else CALIBRATED_WIDTHS[mp.name]
        events.append(ContourEvent.centred(mp.name, LinearMapModel(matrix), box, width))
    return events


def run_converge(cfg, workers=1):
    """Write ``convergence.csv`` and ``slopes.csv``."""
    box = ParameterBox.unit(2) if cfg.domain is None else ParameterBox(cfg.domain["lower"],
                                                                       cfg.domain["upper"])
    c = cfg.convergence
    report = convergence_study(convergence_events(cfg, box), box, c.sample_counts,
                               c.repetitions, c.num_reference, cfg.sampling.seed, workers)
    out = _prepare_output(cfg)
    means, errs = report.mean_errors, report.stderr
    rows = []
    for name in report.names:
        for j, n in enumerate(report.sample_counts):
            se = errs[name][j] if report.repetitions > 1 else ""
            rows.append([name, n, means[name][j], se, report.repetitions])
    write_csv(out / "convergence.csv", ["map", "N", "mean_error", "stderr", "repetitions"], rows)
    write_csv(out / "slopes.csv", ["map", "slope"],
              ([name, s] for name, s in report.fitted_slope.items()))
    return report
