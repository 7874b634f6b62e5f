import plotly.express as px
import polars as pl

LEGEND_COLORS = {
    "probe": "royalblue",
    "majority": "lightsteelblue",
}

LAYOUT = dict(
    font_family="Arial",
    font_color="#008000",
    legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
)


def get_accuracy_chart(data: pl.DataFrame):
    """Generates a grouped bar chart of probe top-1 accuracy next to the majority baseline.

    One group of bars per model, faceted by split.

    Args:
        data (pl.DataFrame): Probe results with columns model, split, top1 and majority.

    Returns:
        plotly.graph_objs._figure.Figure: The generated bar chart figure.
    """
    data = data.unpivot(index=["model", "split"], on=["top1", "majority"], variable_name="measure",
                        value_name="accuracy").with_columns(
        pl.col("measure").replace({"top1": "probe"})
    )
    fig = px.bar(
        data,
        x="model",
        y="accuracy",
        color="measure",
        facet_col="split",
        barmode="group",
        title="Linear probe top-1 accuracy",
        labels={"model": "", "accuracy": "Top-1 accuracy", "measure": ""},
        color_discrete_map=LEGEND_COLORS,
        text_auto=".3f",
    )
    fig.update_layout(**LAYOUT)
    fig.update_yaxes(range=[0, 1])
    return fig


def get_pca_chart(data: pl.DataFrame):
    """Generates a line chart of cumulative variance explained per number of retained dimensions.

    Args:
        data (pl.DataFrame): Curves with columns source, n_components and variance_explained.

    Returns:
        plotly.graph_objs._figure.Figure: The generated line chart figure.
    """
    fig = px.line(
        data,
        x="n_components",
        y="variance_explained",
        color="source",
        log_x=True,
        title="Variance explained by the leading principal components",
        labels={"n_components": "Retained dimensions", "variance_explained": "Variance explained", "source": ""},
    )
    fig.update_layout(**LAYOUT)
    fig.update_yaxes(range=[0, 1.02])
    return fig


def get_csi_chart(data: pl.DataFrame):
    """Generates histograms of class selectivity, one facet row per layer.

    Args:
        data (pl.DataFrame): Indices with columns layer, feature and csi.

    Returns:
        plotly.graph_objs._figure.Figure: The generated histogram figure.
    """
    fig = px.histogram(
        data,
        x="csi",
        facet_row="layer",
        nbins=40,
        range_x=[0, 1],
        title="Class selectivity per layer",
        labels={"csi": "Class selectivity index"},
        height=max(300, 220 * data["layer"].n_unique()),
    )
    fig.update_layout(**LAYOUT)
    return fig


def get_sweep_chart(data: pl.DataFrame, factor: str):
    """Generates a line chart of probe accuracy against one sweep factor, averaged over seeds.

    Args:
        data (pl.DataFrame): Sweep table with columns fps, segment_length_s, augment, seed and top1.
        factor (str): Column on the x axis.

    Returns:
        plotly.graph_objs._figure.Figure: The generated line chart figure.
    """
    others = [column for column in ("fps", "segment_length_s", "augment") if column != factor]
    data = (
        data.group_by([factor, *others])
        .agg(pl.col("top1").mean())
        .sort(factor)
        .with_columns(pl.concat_str([pl.format("{}={}", pl.lit(c), pl.col(c)) for c in others], separator=", ")
                      .alias("setting"))
    )
    fig = px.line(
        data,
        x=factor,
        y="top1",
        color="setting",
        markers=True,
        title=f"Probe accuracy by {factor}",
        labels={"top1": "Top-1 accuracy", "setting": ""},
    )
    fig.update_layout(**LAYOUT)
    return fig
