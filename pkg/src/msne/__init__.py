"""Multiframe speckle-noise estimation"""
