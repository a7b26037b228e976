"""Test suite for the bmode package"""
