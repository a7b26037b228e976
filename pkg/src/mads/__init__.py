"""Multiframe adaptive despeckling"""
