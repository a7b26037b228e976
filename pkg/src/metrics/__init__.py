"""Quantitative image quality and estimation-accuracy indices."""
