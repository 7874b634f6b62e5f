import logging
from pathlib import Path
from typing import List

import polars as pl

from headcam.errors import EmptyInputError
from headcam.probing import read_results, results_table

from .charts import get_accuracy_chart, get_csi_chart, get_pca_chart, get_sweep_chart

logger = logging.getLogger(__name__)


def _collect_csv(dir_runs: Path, name: str) -> pl.DataFrame | None:
    paths = sorted(dir_runs.rglob(name))
    if not paths:
        return None
    return pl.concat([pl.read_csv(path) for path in paths], how="diagonal_relaxed")


def collect_tables(dir_runs: Path) -> dict:
    """Gathers the result tables of every run below a directory.

    Returns:
        dict: Non-empty tables among `results`, `pca`, `csi` and `sweep`.
    """
    tables = {}
    df_results = None
    for path_results in sorted(dir_runs.rglob("results.yml")):
        df_results = results_table(read_results(path_results), df_results)
    if df_results is not None:
        tables["results"] = df_results
    for name in ("pca", "csi", "sweep"):
        df = _collect_csv(dir_runs, f"{name}.csv")
        if df is not None:
            tables[name] = df
    return tables


def write_report(dir_runs: Path, dir_output: Path, plots: bool = True) -> List[Path]:
    """Writes combined tables and, unless disabled, HTML charts of all runs below `dir_runs`.

    Args:
        dir_runs (Path): Directory searched for run outputs.
        dir_output (Path): Directory receiving the report files.
        plots (bool): Render charts next to the tables.

    Returns:
        List[Path]: Files written.

    Raises:
        EmptyInputError: If no run outputs were found.
    """
    tables = collect_tables(dir_runs)
    if not tables:
        raise EmptyInputError(f"No run outputs found below '{dir_runs}'.")
    dir_output.mkdir(parents=True, exist_ok=True)
    written = []
    for name, df in tables.items():
        path_table = dir_output / f"report_{name}.csv"
        df.write_csv(path_table)
        written.append(path_table)
    if not plots:
        logger.info(f"Report tables written to '{dir_output}', plots skipped.")
        return written

    figures = {}
    if "results" in tables:
        figures["accuracy"] = get_accuracy_chart(tables["results"])
    if "pca" in tables:
        figures["pca"] = get_pca_chart(tables["pca"])
    if "csi" in tables:
        figures["csi"] = get_csi_chart(tables["csi"])
    if "sweep" in tables:
        for factor in ("fps", "segment_length_s", "augment"):
            if tables["sweep"][factor].n_unique() > 1:
                figures[f"sweep_{factor}"] = get_sweep_chart(tables["sweep"], factor=factor)
    for name, fig in figures.items():
        file_html = dir_output / f"{name}.html"
        fig.write_html(file_html)
        written.append(file_html)
        logger.info(f"Chart '{name}' written to '{file_html}'.")
    return written
