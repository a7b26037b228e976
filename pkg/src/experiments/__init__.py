"""Simulation sweeps, reference tables and acceptance checks"""
