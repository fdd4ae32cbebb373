from ttflow_plots.figures import PlotSpec, corner_plot, scatter_compare

__all__ = ["PlotSpec", "corner_plot", "scatter_compare"]
