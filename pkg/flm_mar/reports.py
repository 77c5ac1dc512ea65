"""SVG plots and rejection tables."""
import csv
import logging
from io import BytesIO, StringIO

import numpy as np
from matplotlib import rc_context
from matplotlib.figure import Figure
from scipy.stats import gaussian_kde

from .choices import TABLE_ORDER

logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "flm-mar"}
SVG_METADATA = {"Date": None}
DENSITY_POINTS = 512


def render_svg(figure: Figure) -> bytes:
    buffer = BytesIO()
    with rc_context(SVG_RC):
        figure.savefig(buffer, format="svg", metadata=SVG_METADATA)
    return buffer.getvalue()


def slope_plot(slopes, truth=None, title="Estimated slope") -> bytes:
    figure = Figure(figsize=(6, 4))
    axes = figure.add_subplot()
    for slope in slopes:
        axes.plot(slope.basis.grid.points, slope.curve, label=slope.method_tag)
    if truth is not None:
        grid, curve = truth
        axes.plot(grid.points, curve, color="black", linestyle="--", label="true")
    axes.axhline(0.0, color="grey", linewidth=0.5)
    axes.set_xlabel("t")
    axes.set_ylabel("beta(t)")
    axes.set_title(title)
    axes.legend()
    return render_svg(figure)


def density_plot(result) -> bytes:
    """Kernel density of the bootstrap statistics with the observed statistic marked."""
    statistics = np.asarray(result.bootstrap_statistics, dtype=float)
    figure = Figure(figsize=(6, 4))
    axes = figure.add_subplot()
    low = min(statistics.min(), result.statistic)
    high = max(statistics.max(), result.statistic)
    if np.ptp(statistics) > 0:
        span = high - low
        support = np.linspace(max(0.0, low - 0.1 * span), high + 0.1 * span, DENSITY_POINTS)
        axes.plot(support, gaussian_kde(statistics)(support))
    else:
        logger.debug("Bootstrap statistics are constant; drawing no density.")
    axes.axvline(result.statistic, color="red", linestyle="--")
    axes.set_xlabel("PCvM")
    axes.set_ylabel("density")
    axes.set_title(f"{result.method_tag}: p-value {result.p_value:.3f}")
    return render_svg(figure)


def boxplot(samples, ylabel, title) -> bytes:
    """Log-scale boxplots, one per method, in table order."""
    labels = [method for method in TABLE_ORDER if samples.get(method)]
    data = [[value for value in samples[method] if value > 0] for method in labels]
    figure = Figure(figsize=(7, 4))
    axes = figure.add_subplot()
    if labels:
        axes.boxplot(data, labels=labels)
        axes.set_yscale("log")
    axes.set_ylabel(ylabel)
    axes.set_title(title)
    return render_svg(figure)


def eta_label(eta):
    return "none" if eta is None else f"{eta:g}"


def table_name(beta_id, eta):
    return f"rejection_beta{beta_id}_eta{eta_label(eta)}.csv"


def rejection_tables(report):
    """One CSV per (beta, eta): rows (n, delta), columns in table order."""
    tables = {}
    for cell in report.cells:
        dgp = cell.dgp
        name = table_name(dgp.beta_id, dgp.eta)
        rows = tables.setdefault(name, [])
        rows.append(
            [dgp.n, repr(float(dgp.delta))]
            + [
                "NA" if cell.rejection.get(method) is None else repr(cell.rejection[method])
                for method in TABLE_ORDER
            ]
        )
    texts = {}
    for name, rows in tables.items():
        buffer = StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["n", "delta", *TABLE_ORDER])
        writer.writerows(rows)
        texts[name] = buffer.getvalue()
    return texts
