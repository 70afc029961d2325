"""Multi-start benchmark harness and report rendering.

Every optimizer runs from the same list of random starts (drawn once from
the master seed), so comparisons are paired.  Results aggregate into an
iteration-count summary per optimizer and a table of convergence points:
runs are clustered by rounded negative log-likelihood and by parameter
proximity, non-converged runs land in an "Other" row, and per-optimizer
percentages over all rows sum to 100.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import models as models_mod
from . import optim as optim_mod
from .core import ObsSequence


@dataclass
class BenchConfig:
    """One benchmark: model, dataset source, optimizers, shared starts."""

    model: str
    optimizers: tuple = ("baum-welch", "squarem", "qn", "qnem")
    n_starts: int = 1000
    master_seed: int = 0
    dataset: str = "default"  # "default" | path to a sequence file
    sim_seed: int = 1
    nll_bucket: float = 0.1
    theta_merge_tol: float = 1e-2
    optimizer_config: optim_mod.OptimizerConfig = field(default_factory=optim_mod.OptimizerConfig)

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")


@dataclass
class Basin:
    """One convergence point: representative parameters and run shares."""

    nll: float
    theta: np.ndarray
    percent: dict  # optimizer name -> percentage of its runs


@dataclass
class BenchReport:
    """Aggregated multi-start results for one model/dataset."""

    config: BenchConfig
    param_names: tuple
    summary: dict  # optimizer -> statistics dict
    basins: list  # list of Basin, best likelihood first
    other_percent: dict  # optimizer -> percentage in no basin (non-converged)
    records: dict  # optimizer -> list of RunRecord
    starts: np.ndarray


def draw_starts(model, n_starts: int, master_seed: int) -> np.ndarray:
    """The shared start list: one RNG stream, identical for every optimizer."""
    rng = np.random.default_rng(master_seed)
    return np.stack([model.start_sampler(rng) for _ in range(n_starts)])


def resolve_dataset(cfg: BenchConfig, model) -> ObsSequence:
    if cfg.dataset == "default":
        return data_mod.default_sequence(model, sim_seed=cfg.sim_seed)
    return data_mod.read_sequence(cfg.dataset, model)


def run_bench(cfg: BenchConfig) -> BenchReport:
    """Run every optimizer from every shared start and aggregate.

    Individual run failures (line-search dead ends, impossible-likelihood
    starts) are recorded as non-converged runs, never raised.
    """
    model = models_mod.get_model(cfg.model)
    seq = resolve_dataset(cfg, model)
    starts = draw_starts(model, cfg.n_starts, cfg.master_seed)
    ocfg = cfg.optimizer_config
    records: dict = {name: [] for name in cfg.optimizers}
    for name in cfg.optimizers:
        kwargs = {"crit": ocfg.stop(), "max_iter": ocfg.max_iter}
        if name in ("qn", "qnem"):
            kwargs["armijo"] = ocfg.armijo()
        if name == "squarem":
            kwargs["max_halvings"] = ocfg.squarem_max_halvings
        for k in range(cfg.n_starts):
            try:
                rec = optim_mod.run_optimizer(name, model, seq, starts[k], **kwargs)
            except Exception as exc:  # defensive: a run must never sink the bench
                rec = optim_mod.RunRecord(
                    optimizer_name=name,
                    final_theta=model.param_vector(
                        np.clip(starts[k], model.qn_lower, model.qn_upper), "qn"),
                    final_loglik=-np.inf,
                    iterations=0, n_forward=0, n_backward=0, wall_time=0.0,
                    converged=False, start_theta=starts[k], error=repr(exc),
                )
            records[name].append(rec)
    summary = {name: _summarize(records[name]) for name in cfg.optimizers}
    basins, other = _cluster_basins(records, cfg)
    return BenchReport(config=cfg, param_names=model.param_names, summary=summary,
                       basins=basins, other_percent=other, records=records, starts=starts)


def _summarize(records) -> dict:
    iters = np.array([r.iterations for r in records], dtype=float)
    return {
        "min_iter": float(iters.min()),
        "q1_iter": float(np.percentile(iters, 25)),
        "median_iter": float(np.percentile(iters, 50)),
        "mean_iter": float(iters.mean()),
        "q3_iter": float(np.percentile(iters, 75)),
        "max_iter": float(iters.max()),
        "mean_forward": float(np.mean([r.n_forward for r in records])),
        "mean_backward": float(np.mean([r.n_backward for r in records])),
        "mean_time_s": float(np.mean([r.wall_time for r in records])),
        "pct_converged": 100.0 * float(np.mean([r.converged for r in records])),
    }


def _cluster_basins(records: dict, cfg: BenchConfig):
    """Group converged runs into basins by rounded NLL and close parameters."""
    runs = []
    for name, recs in records.items():
        for r in recs:
            if r.converged and np.isfinite(r.final_loglik):
                runs.append((name, -r.final_loglik, r.final_theta.values))
    runs.sort(key=lambda item: (item[1], tuple(item[2])))
    reps: list = []  # (nll, theta) representatives, in discovery order
    members: list = []  # parallel list of {optimizer: count}
    for name, nll, theta in runs:
        placed = False
        for i, (rep_nll, rep_theta) in enumerate(reps):
            if (abs(nll - rep_nll) <= cfg.nll_bucket + 1e-12
                    and np.max(np.abs(theta - rep_theta)) < cfg.theta_merge_tol):
                members[i][name] = members[i].get(name, 0) + 1
                placed = True
                break
        if not placed:
            reps.append((nll, theta))
            members.append({name: 1})
    n = {name: max(len(recs), 1) for name, recs in records.items()}
    basins = [
        Basin(
            nll=rep_nll,
            theta=rep_theta,
            percent={name: 100.0 * members[i].get(name, 0) / n[name] for name in records},
        )
        for i, (rep_nll, rep_theta) in enumerate(reps)
    ]
    other = {
        name: 100.0 - sum(b.percent[name] for b in basins) for name in records
    }
    return basins, other


# ---------------------------------------------------------------------------
# rendering

_SUMMARY_COLUMNS = [
    ("min_iter", "Min", "{:.0f}"),
    ("q1_iter", "Q1", "{:.0f}"),
    ("median_iter", "Q2", "{:.0f}"),
    ("mean_iter", "Mean", "{:.2f}"),
    ("q3_iter", "Q3", "{:.0f}"),
    ("max_iter", "Max", "{:.0f}"),
    ("mean_forward", "Fw", "{:.2f}"),
    ("mean_backward", "Bw", "{:.2f}"),
    ("mean_time_s", "Time (s)", "{:.2f}"),
    ("pct_converged", "Conv (%)", "{:.1f}"),
]


def _summary_cells(report: BenchReport, zero_timing: bool) -> list:
    rows = []
    for name in report.config.optimizers:
        stats = dict(report.summary[name])
        if zero_timing:
            stats["mean_time_s"] = 0.0
        rows.append([name] + [fmt.format(stats[key]) for key, _, fmt in _SUMMARY_COLUMNS])
    return rows


def _basin_cells(report: BenchReport) -> list:
    opts = list(report.config.optimizers)
    rows = []
    for basin in report.basins:
        row = [f"{basin.nll:.1f}"]
        row += [f"{v:.4g}" for v in basin.theta]
        row += [f"{basin.percent[name]:.1f}" for name in opts]
        rows.append(row)
    rows.append(["Other"] + [""] * len(report.param_names)
                + [f"{report.other_percent[name]:.1f}" for name in opts])
    return rows


def _render(header, rows, format: str) -> str:
    if format == "csv":
        return "".join(",".join(map(str, row)) + "\n" for row in [header] + rows)
    if format == "markdown":
        return _md_table(header, rows)
    raise ValueError(f"unknown report format {format!r}")


def emit_summary(report: BenchReport, format: str = "markdown", zero_timing: bool = False) -> str:
    header = ["optimizer"] + [label for _, label, _ in _SUMMARY_COLUMNS]
    return _render(header, _summary_cells(report, zero_timing), format)


def emit_basins(report: BenchReport, format: str = "markdown") -> str:
    header = ["NLL"] + list(report.param_names) + list(report.config.optimizers)
    return _render(header, _basin_cells(report), format)


def emit_report(report: BenchReport, format: str = "markdown", zero_timing: bool = False) -> str:
    """Render the summary and convergence-point tables as markdown or CSV."""
    if format == "csv":
        return emit_summary(report, "csv", zero_timing) + "\n" + emit_basins(report, "csv")
    if format == "markdown":
        title = f"{report.config.model} ({report.config.n_starts} starts, seed {report.config.master_seed})"
        return (f"## {title}\n\n### Iterations and steps\n\n"
                + emit_summary(report, "markdown", zero_timing)
                + "\n### Convergence points\n\n"
                + emit_basins(report, "markdown"))
    raise ValueError(f"unknown report format {format!r}")


def _md_table(header, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |\n"
    out = line(header)
    out += "|" + "|".join("-" * (w + 2) for w in widths) + "|\n"
    for row in rows:
        out += line(row)
    return out


def report_paths(out_prefix: str | None, model: str):
    """File-name stems for the summary and basin reports."""
    if out_prefix is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out_prefix = f"{model}_{stamp}"
    return (f"{out_prefix}_summary.md", f"{out_prefix}_summary.csv",
            f"{out_prefix}_basins.md", f"{out_prefix}_basins.csv")


def write_reports(report: BenchReport, out_prefix: str | None, zero_timing: bool = False) -> list:
    """Write the four report files; returns the paths written."""
    md_path, csv_path, basins_md, basins_csv = report_paths(out_prefix, report.config.model)
    contents = {
        md_path: emit_summary(report, "markdown", zero_timing),
        csv_path: emit_summary(report, "csv", zero_timing),
        basins_md: emit_basins(report, "markdown"),
        basins_csv: emit_basins(report, "csv"),
    }
    for path, text in contents.items():
        with open(path, "w") as fh:
            fh.write(text)
    return list(contents)
