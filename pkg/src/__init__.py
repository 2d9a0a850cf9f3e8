"""Heatmap Endpoints - Sample, evaluate and rasterize multimodal endpoint predictions."""

__version__ = "1.0.0"
