"""Blind 2-D deconvolution of RF data"""
