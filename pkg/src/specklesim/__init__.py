"""Synthetic multiframe speckle generation"""
