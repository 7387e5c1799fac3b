"""Test suite for the spectral radiance field engine"""
